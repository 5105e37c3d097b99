#include <math.h>
#include <stdio.h>
#include <string.h>

#include "dqcalib.h"

/* Pure rotation by `angle` about z followed by translation (tx, ty, tz). */
static void motion(double angle, double tx, double ty, double tz, double *q) {
    double c = cos(angle / 2), s = sin(angle / 2);
    double r[4] = {c, 0, 0, s};
    double t[4] = {0, tx, ty, tz};
    q[0] = r[0]; q[1] = r[1]; q[2] = r[2]; q[3] = r[3];
    /* dual = 0.5 * t * r */
    q[4] = 0.5 * (t[0] * r[0] - t[1] * r[1] - t[2] * r[2] - t[3] * r[3]);
    q[5] = 0.5 * (t[0] * r[1] + t[1] * r[0] + t[2] * r[3] - t[3] * r[2]);
    q[6] = 0.5 * (t[0] * r[2] - t[1] * r[3] + t[2] * r[0] + t[3] * r[1]);
    q[7] = 0.5 * (t[0] * r[3] + t[1] * r[2] - t[2] * r[1] + t[3] * r[0]);
}

int main(void) {
    DqcAccumulator *acc = NULL;
    if (dqc_accumulator_new(DQC_MODE_FULL3D, &acc) != DQC_STATUS_OK) return 1;
    double id[8] = {1, 0, 0, 0, 0, 0, 0, 0};
    if (dqc_accumulator_add(acc, id, id, 0.0, NULL, 1.0) != DQC_STATUS_OK) return 2;
    DqcSolution sol;
    DqcStatus st = dqc_solve_global(NULL, 1e-6, &sol);
    if (st != DQC_STATUS_NULL_POINTER || strlen(dqc_last_error_message()) == 0) return 3;
    double bad[8] = {2, 0, 0, 0, 0, 0, 0, 0};
    if (dqc_accumulator_add(acc, bad, id, 0.1, NULL, 1.0) != DQC_STATUS_NOT_UNIT) return 4;
    if (dqc_accumulator_len(acc) != 1) return 5;
    dqc_accumulator_free(acc);

    double q[8];
    motion(0.3, 1.0, 2.0, 0.5, q);
    double r = -1, t = -1;
    if (dqc_calib_error(q, q, &r, &t) != DQC_STATUS_OK || r != 0.0 || t != 0.0) return 6;
    printf("dqcalib %s ok\n", dqc_version());
    return 0;
}
