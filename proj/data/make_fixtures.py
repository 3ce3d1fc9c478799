"""Regenerates the CSV fixtures and reference fits in this directory.

numpy.random.default_rng(20240611); rerunning overwrites the files with
identical content.
"""
import json
import pathlib

import numpy as np
import statsmodels.api as sm

HERE = pathlib.Path(__file__).resolve().parent
SEED = 20240611


def write_csv(path, y, X):
    header = ["y"] + [f"x{j + 1}" for j in range(X.shape[1])]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for yi, row in zip(y, X):
            f.write(",".join(repr(float(v)) for v in [yi, *row]) + "\n")


def main():
    rng = np.random.default_rng(SEED)
    n = 60
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n)])
    beta = np.array([1.0, 2.0, -1.0])
    y = X @ beta + rng.normal(size=n)
    write_csv(HERE / "normal_fixture.csv", y, X)

    beta_ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta_ols
    with open(HERE / "normal_fixture_ols.json", "w") as f:
        json.dump({"beta": beta_ols.tolist(), "phi_mle": float(resid @ resid / n),
                   "generating_beta": beta.tolist(), "seed": SEED}, f, indent=2)

    # 10% of responses shifted by +15.
    yc = y.copy()
    bad = rng.choice(n, size=n // 10, replace=False)
    yc[bad] += 15.0
    write_csv(HERE / "contaminated_fixture.csv", yc, X)
    with open(HERE / "contaminated_fixture_meta.json", "w") as f:
        json.dump({"generating_beta": beta.tolist(), "outlier_rows": sorted(int(i) + 1 for i in bad),
                   "shift": 15.0, "seed": SEED}, f, indent=2)

    m = 80
    Xp = np.column_stack([np.ones(m), rng.uniform(-1.0, 1.0, size=m)])
    bp = np.array([1.0, 0.7])
    yp = rng.poisson(np.exp(Xp @ bp)).astype(float)
    write_csv(HERE / "poisson_fixture.csv", yp, Xp)
    res = sm.GLM(yp, Xp, family=sm.families.Poisson()).fit(tol=1e-14, maxiter=200)
    with open(HERE / "poisson_fixture_mle.json", "w") as f:
        json.dump({"beta": [float(v) for v in res.params], "generating_beta": bp.tolist(), "seed": SEED}, f, indent=2)


if __name__ == "__main__":
    main()
