"""Generate the TW1 CDF table shipped in data/tw1_cdf.csv.

F1(s) = det(I - K) on L^2(s, inf) with K(x, y) = Ai((x + y) / 2) / 2,
discretized by Gauss-Legendre quadrature (Nystrom method).

    python3 tools/gen_tw1_table.py > data/tw1_cdf.csv
"""
import numpy as np
from scipy.special import airy

M = 240
NODES, WEIGHTS = np.polynomial.legendre.leggauss(M)


def tw1_cdf(s: float) -> float:
    hi = max(s, 0.0) + 18.0
    x = 0.5 * (hi - s) * NODES + 0.5 * (hi + s)
    w = 0.5 * (hi - s) * WEIGHTS
    sw = np.sqrt(w)
    k = 0.5 * airy(0.5 * (x[:, None] + x[None, :]))[0]
    a = np.eye(M) - sw[:, None] * k * sw[None, :]
    sign, logdet = np.linalg.slogdet(a)
    return float(np.exp(logdet)) if sign > 0 else 0.0


def main() -> None:
    print("x,cdf")
    for i in range(1601):
        s = -10.0 + 0.01 * i
        print(f"{s:.2f},{tw1_cdf(s):.17g}")


if __name__ == "__main__":
    main()
