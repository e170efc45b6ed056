"""Truncation-limit study: distances between n and 2n runs, escaped mass vs n.

    python scripts/truncation_study.py --out results/truncation --T 2
"""

import argparse
from pathlib import Path

from truncoag import acceptance, cli, harness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results/truncation")
    ap.add_argument("--T", type=float, default=2.0)
    ap.add_argument("--n", type=float, nargs="+", default=[10, 20, 40, 80, 160])
    ap.add_argument("--cells-per-doubling", type=int, default=8)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = acceptance.mass_config(T=args.T).with_(n_outputs=20)
    summary = {}
    for zeta in (0, 1):
        rep = harness.truncation_sequence_study(base, args.n, zeta, args.cells_per_doubling)
        summary[rep.name] = {"distances": rep.distances, "criteria": rep.criteria, "runs": rep.rows}
        for (a, b), d in zip(zip(args.n, args.n[1:]), rep.distances):
            print(f"zeta={zeta}  n={a:g} -> {b:g}  sup_t distance {d:.6e}")
    esc = harness.mass_loss_curve(base.with_(T=5.0), args.n)
    summary["escaped_T5"] = dict(zip((f"{n:g}" for n in args.n), esc))
    for n, e in zip(args.n, esc):
        print(f"n={n:g}  escaped(5) {e:.6e}")
    (out / "truncation_study.json").write_text(cli.to_json(summary) + "\n")


if __name__ == "__main__":
    main()
