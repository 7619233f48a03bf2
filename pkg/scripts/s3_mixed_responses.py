"""Mixed continuous and dichotomized responses (s3)."""
from _common import config, parser, run

if __name__ == "__main__":
    p = parser(__doc__, reps=10)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=int, default=200)
    args = p.parse_args()
    run("s3", [config("s3", args.n, args.p, args)], ["integration", "single:1"], ["scad"], args)
