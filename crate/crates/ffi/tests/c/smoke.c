#include <math.h>
#include <stdio.h>
#include "robandit.h"

int main(void) {
    const double basis[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    RbActionSet *set = NULL;
    RbDesign *design = NULL;
    uint64_t counts[3];

    if (rb_action_set_new(basis, 3, 3, &set) != RB_STATUS_OK) return 1;
    if (rb_design_compute(set, 0.01, 1000, &design) != RB_STATUS_OK) return 2;
    if (fabs(rb_design_gvalue(design) - 3.0) > 1e-9) return 3;
    if (rb_design_coreset_counts(design, 30, RB_CLIENT_MODEL_M1, 0.0, counts, 3) != RB_STATUS_OK) return 4;
    if (counts[0] != 10 || counts[1] != 10 || counts[2] != 10) return 5;

    const double bad[2] = {3.0, 0.0};
    RbActionSet *rejected = NULL;
    if (rb_action_set_new(bad, 1, 2, &rejected) != RB_STATUS_INVALID_INPUT) return 6;
    if (rb_last_error_message() == NULL) return 7;

    rb_design_free(design);
    rb_action_set_free(set);
    printf("ok %s\n", rb_version());
    return 0;
}
