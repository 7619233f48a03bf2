"""Continuous correlated responses (s1): integration vs the first experiment alone."""
from _common import config, parser, run

if __name__ == "__main__":
    p = parser(__doc__, reps=20)
    p.add_argument("--n", type=int, nargs="+", default=[500])
    p.add_argument("--p", type=int, nargs="+", default=[200])
    args = p.parse_args()
    cfgs = [config("s1", n, pp, args) for n in args.n for pp in args.p]
    run("s1", cfgs, ["integration", "single:1"], ["scad"], args)
