/* Midpoint-rule integral of 4/(1+x^2) over slice k of n, STEPS points per slice. */
#include <stdio.h>
#include <stdlib.h>

#define STEPS 1000000L

int main(int argc, char **argv) {
    if (argc != 3) {
        fprintf(stderr, "usage: slice <k> <n>\n");
        return 2;
    }
    long k = atol(argv[1]), n = atol(argv[2]);
    double h = 1.0 / (double)(STEPS * n);
    double sum = 0.0;
    for (long i = k * STEPS; i < (k + 1) * STEPS; i++) {
        double x = ((double)i + 0.5) * h;
        sum += 4.0 / (1.0 + x * x);
    }
    printf("%.17g\n", sum * h);
    return 0;
}
