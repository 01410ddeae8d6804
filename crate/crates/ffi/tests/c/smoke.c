#include <math.h>
#include <stdio.h>
#include "apsm.h"

int main(void) {
    double h[2] = {2.0, 0.0};
    double w[2] = {1.0, 1.0};
    double x[2];
    if (apsm_l1ball_project(h, w, 2, 1.0, x) != APSM_STATUS_OK) return 1;
    if (fabs(x[0] - 1.0) > 1e-15 || x[1] != 0.0) return 2;

    if (apsm_l1ball_project(h, NULL, 2, 1.0, x) != APSM_STATUS_NULL_POINTER) return 3;
    if (apsm_last_error_message() == NULL) return 4;

    size_t edges[4] = {0, 1, 1, 2};
    ApsmTopology *topo = NULL;
    if (apsm_topology_new(3, edges, 2, &topo) != APSM_STATUS_OK) return 5;
    ApsmNetwork *net = NULL;
    const char *cfg = "{\"eps\": 0.01, \"rho\": 2.0, \"learner\": {\"q\": 2}}";
    if (apsm_network_new(topo, APSM_COMBINATION_RULE_METROPOLIS, 2, cfg, &net) != APSM_STATUS_OK) return 6;
    apsm_topology_free(topo);

    double truth[2] = {1.0, 0.0};
    double d[3];
    double u[6] = {1.0, 0.3, -0.4, 1.0, 0.7, -0.2};
    for (int k = 0; k < 3; k++) d[k] = u[2 * k] * truth[0] + u[2 * k + 1] * truth[1];
    double before, after;
    if (apsm_network_msd(net, truth, 2, &before) != APSM_STATUS_OK) return 7;
    for (int n = 0; n < 50; n++)
        if (apsm_network_step(net, d, u, 3, 2) != APSM_STATUS_OK) return 8;
    if (apsm_network_msd(net, truth, 2, &after) != APSM_STATUS_OK) return 9;
    if (!(after < before)) return 10;
    apsm_network_free(net);
    printf("ok %.3e %.3e\n", before, after);
    return 0;
}
