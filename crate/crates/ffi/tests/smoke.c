#include <stdio.h>
#include <string.h>
#include "qcorr.h"

int main(void) {
    QcorrConfig *cfg = qcorr_config_new();
    if (qcorr_config_set(cfg, "hbar", "0.1") != QCORR_STATUS_OK) return 1;
    if (qcorr_config_set(cfg, "dt_meas", "0.1") != QCORR_STATUS_OK) return 1;
    if (qcorr_config_set(cfg, "bogus", "1") != QCORR_STATUS_CONFIG) return 2;
    if (strstr(qcorr_last_error(), "bogus") == NULL) return 3;

    QcorrRegimeReport r;
    if (qcorr_regimes(cfg, &r) != QCORR_STATUS_OK) return 4;
    if (r.label != QCORR_REGIME_UNCERTAINTY_DOMINATED || r.uncertainty != 5.0) return 5;

    qcorr_config_set(cfg, "ensemble_size", "2");
    qcorr_config_set(cfg, "t_max", "1");
    QcorrEnsemble *e = NULL;
    if (qcorr_run_ensemble(cfg, &e) != QCORR_STATUS_OK) return 6;
    size_t n = 0;
    qcorr_ensemble_sample_count(e, 0, &n);
    QcorrSample first;
    size_t written = 0;
    qcorr_ensemble_samples(e, 0, &first, 1, &written);
    double t;
    bool censored;
    qcorr_ensemble_divergence(e, &t, &censored);
    printf("%s runs=%zu samples=%zu first_t=%g divergence=%g\n", qcorr_version(),
           qcorr_ensemble_run_count(e), n, first.t, t);
    qcorr_ensemble_free(e);
    qcorr_config_free(cfg);
    return 0;
}
