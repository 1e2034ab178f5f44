#include <stdio.h>
#include <string.h>
#include "mcrkit.h"

int main(void) {
    double y[6] = {1.0, 2.1, 2.9, 4.2, 5.1, 5.8};
    double x1[6] = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0};
    double x2[6] = {1.0, 0.0, 1.0, 0.0, 1.0, 0.0};
    McrkitDataset *ds = NULL;
    if (mcrkit_dataset_new(y, 6, x1, 1, x2, 1, &ds) != MCRKIT_STATUS_OK) return 1;
    if (mcrkit_dataset_rows(ds) != 6) return 2;

    double beta[2] = {1.0, 0.0};
    double eo, es, mr;
    if (mcrkit_linear_model_reliance(ds, beta, 2, 1.0, MCRKIT_ESTIMATOR_SWITCH, MCRKIT_MODE_RATIO, &eo, &es, &mr) != MCRKIT_STATUS_OK) return 3;

    McrkitClass *cls = NULL;
    double w[2] = {1.0, 1.0};
    if (mcrkit_linear_class_new(ds, true, w, 4.0, MCRKIT_ESTIMATOR_SWITCH, &cls) != MCRKIT_STATUS_OK) return 4;
    double params[3];
    double erm_orig, erm_switch;
    if (mcrkit_class_minimize(cls, 1.0, 0.0, params, 3, &erm_orig, &erm_switch) != MCRKIT_STATUS_OK) return 5;
    McrkitBounds b;
    if (mcrkit_class_search(cls, erm_orig * 1.5, &b) != MCRKIT_STATUS_OK) return 6;
    if (!(b.lower <= b.upper)) return 7;

    McrkitDataset *bad = NULL;
    if (mcrkit_dataset_load_csv("/nonexistent.csv", "y", "a", &bad) != MCRKIT_STATUS_DATA_ERROR) return 8;
    char msg[256];
    if (mcrkit_last_error_message(msg, sizeof msg) != MCRKIT_STATUS_OK || strlen(msg) == 0) return 9;

    printf("version=%s mr=%.6f lower=%.6f upper=%.6f\n", mcrkit_version(), mr, b.lower, b.upper);
    mcrkit_class_free(cls);
    mcrkit_dataset_free(ds);
    return 0;
}
