import argparse
import csv
import sys

from mpmath import mp

from app.services import moments, recursions
from app.services.numeric import working_bits


def main() -> None:
    parser = argparse.ArgumentParser(description="d*(k) table: bounds, asymptotic gap, scaled free density")
    parser.add_argument("--k-min", type=int, default=10)
    parser.add_argument("--k-max", type=int, default=20)
    parser.add_argument("--digits", type=int, default=25)
    args = parser.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["k", "d_lbd", "d_star", "d_ubd", "d_star_minus_asymptotic", "q_free_2k"])
    for k in range(args.k_min, args.k_max + 1):
        bits = working_bits(k)
        with mp.workprec(bits):
            th = moments.thresholds(k)
            d_star = moments.find_d_star(k, bits=bits)
            state = recursions.iterate_qv(k, d_star, bits=bits)
            row = [th.d_lbd, d_star, th.d_ubd, d_star - moments.d_star_asymptotic(k), mp.ldexp(state.q_free, k)]
            w.writerow([k] + [mp.nstr(x, args.digits) for x in row])


if __name__ == "__main__":
    main()
