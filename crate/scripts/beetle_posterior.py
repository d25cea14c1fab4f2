"""Writes an approximate posterior sample for the six beetle dose-response models.

Each model is fitted by maximum likelihood on the coded dose scale and the
posterior is approximated by a normal distribution centred at the estimate
with the inverse observed information as covariance.

    python3 scripts/beetle_posterior.py data/beetle.csv data/beetle_posterior.csv
"""

import sys

import numpy as np
from scipy import optimize, stats

LO, HI = 1.6907, 1.8839
DRAWS = 1000
SEED = 20150101


def inv_link(u, eta):
    if u in (1, 2):
        return 1.0 / (1.0 + np.exp(-eta))
    if u in (3, 4):
        return -np.expm1(-np.exp(eta))
    return stats.norm.cdf(eta)


def negloglik(beta, u, x, n, y):
    eta = beta[0] + beta[1] * x
    if u % 2 == 0:
        eta = eta + beta[2] * x * x
    p = np.clip(inv_link(u, eta), 1e-12, 1 - 1e-12)
    return -np.sum(y * np.log(p) + (n - y) * np.log1p(-p))


def hessian(f, b, h=1e-4):
    k = len(b)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            e_i = np.eye(k)[i] * h
            e_j = np.eye(k)[j] * h
            out[i, j] = (f(b + e_i + e_j) - f(b + e_i - e_j) - f(b - e_i + e_j) + f(b - e_i - e_j)) / (4 * h * h)
    return out


def main(data_path, out_path):
    data = np.genfromtxt(data_path, delimiter=",", names=True)
    x = 2 * (data["dose"] - LO) / (HI - LO) - 1
    n, y = data["n"], data["deaths"]
    rng = np.random.default_rng(SEED)
    rows = []
    for u in range(1, 7):
        k = 3 if u % 2 == 0 else 2
        f = lambda b: negloglik(b, u, x, n, y)
        fit = optimize.minimize(f, np.zeros(k), method="BFGS", options={"gtol": 1e-10})
        cov = np.linalg.inv(hessian(f, fit.x))
        for b in rng.multivariate_normal(fit.x, cov, size=DRAWS):
            rows.append((u, b))
    with open(out_path, "w") as fh:
        fh.write("u,b0,b1,b2,weight\n")
        for u, b in rows:
            b2 = f"{b[2]:.10g}" if len(b) == 3 else ""
            fh.write(f"{u},{b[0]:.10g},{b[1]:.10g},{b2},\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
