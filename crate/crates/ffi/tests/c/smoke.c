#include <stdio.h>
#include <math.h>
#include "covsel.h"

int main(void) {
    CovselMatrix *m = NULL;
    CovselFactor *f = NULL;
    CovselSelcov *s = NULL;
    double v = 0.0;
    if (covsel_model_ar1(50, 0.9, &m) != COVSEL_STATUS_OK) return 10;
    if (covsel_factor_new(m, &f) != COVSEL_STATUS_OK) return 11;
    if (covsel_selected_inverse(m, f, COVSEL_INDEX_KIND_DIAGONAL, &s) != COVSEL_STATUS_OK) return 12;
    if (covsel_selcov_get(s, 25, 25, &v) != COVSEL_STATUS_OK) return 13;
    if (fabs(v - 1.0 / (1.0 - 0.81)) > 1e-12) return 14;
    if (covsel_selcov_get(s, 25, 24, &v) != COVSEL_STATUS_NOT_FOUND) return 15;
    if (covsel_last_error_message() == NULL) return 16;
    covsel_selcov_free(s);
    covsel_factor_free(f);
    covsel_matrix_free(m);
    printf("ok %s\n", covsel_version());
    return 0;
}
