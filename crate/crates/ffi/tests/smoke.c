#include <stdio.h>
#include "rsmimo.h"

int main(void) {
    RsmimoConfig *cfg = NULL;
    if (rsmimo_config_new(2, 4, 10, 1.0, &cfg) != RSMIMO_STATUS_DIMENSION || cfg != NULL) {
        return 1;
    }
    if (rsmimo_last_error_message() == NULL) {
        return 2;
    }
    if (rsmimo_config_new(16, 2, 50, 100.0, &cfg) != RSMIMO_STATUS_OK) {
        return 3;
    }
    rsmimo_config_set_mode(cfg, RSMIMO_CSIT_IMPERFECT, RSMIMO_STRATEGY_RS, RSMIMO_TOPOLOGY_CLO);
    rsmimo_config_set_uniform_impairments(cfg, 1e-4, 0.0, 1.0);
    double rates[2];
    RsmimoSummary s;
    if (rsmimo_de_rates(cfg, rates, 2, &s) != RSMIMO_STATUS_OK) {
        return 4;
    }
    printf("%zu %.6f %.6f %.6f\n", s.users, rates[0], rates[1], s.sum_rate);
    rsmimo_config_free(cfg);
    return 0;
}
