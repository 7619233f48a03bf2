"""Selection error (1 - psr) + fdr of the integration method as n grows at fixed p."""
from _common import config, parser, run

if __name__ == "__main__":
    p = parser(__doc__, reps=20)
    p.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000])
    p.add_argument("--p", type=int, default=200)
    args = p.parse_args()
    agg = run("trend", [config("s1", n, args.p, args) for n in args.n],
              ["integration"], ["scad"], args)
    agg = agg[agg.c == 1.0].sort_values("n")
    err = list((1 - agg.psr_mean) + agg.fdr_mean)
    print("(1-psr)+fdr:", " ".join(f"n={n}:{e:.4f}" for n, e in zip(agg.n, err)))
    print("nonincreasing" if all(b <= a for a, b in zip(err, err[1:])) else "not monotone")
