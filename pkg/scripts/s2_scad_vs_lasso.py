"""Predictors correlated with non-predictors (s2): group SCAD vs group lasso."""
from _common import config, parser, run

if __name__ == "__main__":
    p = parser(__doc__, reps=10)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=int, default=1000)
    p.add_argument("--rho", type=float, nargs="+", default=[0.2])
    args = p.parse_args()
    cfgs = [config("s2", args.n, args.p, args, rho_block=r) for r in args.rho]
    run("s2", cfgs, ["integration"], ["scad", "lasso"], args, cs=(1.0,))
