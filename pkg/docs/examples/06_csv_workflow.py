#!/usr/bin/env python3
"""The command-line workflow: CSV in, JSON out.

Writes a small CSV with blank cells marking missing values plus a JSON
config, then drives the `ipinfer` CLI in-process: `analyze` for the
estimate and interval (with the transfer-gap report attached) and
`diagnose` for the report alone. The same commands work from a shell:

    ipinfer analyze data.csv --config analyze.json --diagnose
    ipinfer diagnose data.csv --config diagnose.json

Usage:
    python 06_csv_workflow.py
"""

import json
import pathlib
import tempfile

import numpy as np

from ipinfer import cli


def write_csv(path, rng, n_complete=120, per_pattern=240):
    total = n_complete + 2 * per_pattern
    factor = rng.standard_normal((total, 1))
    x = 0.8 * factor + 0.6 * rng.standard_normal((total, 3))
    y = 1.2 * x[:, 0] - 0.8 * x[:, 1] + 0.4 * rng.standard_normal(total)
    rows = np.column_stack([y, x]).astype(object)
    rows[n_complete : n_complete + per_pattern, 1] = None
    rows[n_complete + per_pattern :, 2] = None
    lines = ["y,x0,x1,x2"]
    for row in rows:
        lines.append(",".join("" if v is None else f"{v:.6f}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def main():
    workdir = pathlib.Path(tempfile.mkdtemp(prefix="ipinfer-demo-"))
    csv_path = workdir / "data.csv"
    write_csv(csv_path, np.random.default_rng(8))

    config = {
        "loss": {
            "family": "linear_regression",
            "response": "y",
            "covariates": ["x0", "x1"],
        },
        "method": "ipi",
        "imputer": "gaussian_conditional",
        "train_frac": 0.1,
        "alpha": 0.1,
        "seed": 8,
    }
    config_path = workdir / "analyze.json"
    config_path.write_text(json.dumps(config, indent=2))

    out_path = workdir / "result.json"
    code = cli.main(
        [
            "analyze",
            str(csv_path),
            "--config",
            str(config_path),
            "--diagnose",
            "--out",
            str(out_path),
        ]
    )
    assert code == 0
    result = json.loads(out_path.read_text())

    print(f"wrote {csv_path} and {config_path}")
    for name, est, (lo, hi) in zip(
        result["coefficients"], result["theta_hat"], result["ci"]
    ):
        print(f"{name}: {est:+.3f}  [{lo:+.3f}, {hi:+.3f}]")
    print(f"lambda = {np.round(result['lambda'], 3)}")
    print(
        f"N_eff = {result['n_effective'][0]:.0f} complete-row equivalents "
        f"(complete rows: {result['n_complete']})"
    )
    print(
        "transfer-gap p-value:",
        f"{result['diagnostics']['weighted']['p_value']:.3f}",
    )
    for warning in result["warnings"]:
        print(f"warning: {warning}")


if __name__ == "__main__":
    main()
