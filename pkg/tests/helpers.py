"""Shared generators for the DSL and simulator checks."""
from sizestruct.equilibrium import RateSet
from sizestruct.numerics import SizeGrid
from sizestruct.ratedsl import diff_expr, eval_expr, parse_expr, variables
from sizestruct.simulator import SimConfig

_SMOOTH_UNARY = ["sin", "cos", "exp", "sq", "recip", "ln1p", "sqrt1p", "cube"]


def random_smooth_expr(rng, depth):
    """Random expression, smooth and well defined for variables in [0.2, 1.5]."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.7:
            return rng.choice(["s", "P", "Q", "tau"])
        return f"{rng.uniform(0.1, 2):.3f}"
    kind = rng.integers(0, 3)
    if kind == 0:
        op = rng.choice(["+", "-", "*"])
        return f"({random_smooth_expr(rng, depth - 1)} {op} {random_smooth_expr(rng, depth - 1)})"
    if kind == 1:
        a = random_smooth_expr(rng, depth - 1)
        return {
            "sin": f"sin({a})",
            "cos": f"cos({a})",
            "exp": f"exp(0.3*{a})",
            "sq": f"({a})^2",
            "recip": f"1/(1 + ({a})^2)",
            "ln1p": f"ln(1 + ({a})^2)",
            "sqrt1p": f"sqrt(2 + sin({a}))",
            "cube": f"({a})^3",
        }[rng.choice(_SMOOTH_UNARY)]
    a, b = random_smooth_expr(rng, depth - 1), random_smooth_expr(rng, depth - 1)
    return f"({a}) / (1.5 + cos({b}))"


def random_derivative_cases(rng, count):
    """``count`` (expression, variable, point) triples with at least one variable."""
    cases = []
    while len(cases) < count:
        e = parse_expr(random_smooth_expr(rng, 4))
        names = sorted(variables(e))
        if not names:
            continue
        v = names[rng.integers(0, len(names))]
        point = {k: float(rng.uniform(0.3, 1.4)) for k in ("s", "P", "Q", "tau")}
        cases.append((e, v, point))
    return cases


def derivative_error(e, v, point):
    """Scaled gap between the symbolic derivative and a Richardson-extrapolated central difference."""
    sym = eval_expr(diff_expr(e, v), point)
    x0 = point[v]
    h = 1e-4 * max(1.0, abs(x0))

    def f(x):
        return eval_expr(e, dict(point, **{v: x}))

    d1 = (f(x0 - 2 * h) - 8 * f(x0 - h) + 8 * f(x0 + h) - f(x0 + 2 * h)) / (12 * h)
    d2 = (f(x0 - h) - 8 * f(x0 - h / 2) + 8 * f(x0 + h / 2) - f(x0 + h)) / (6 * h)
    fd = (16 * d2 - d1) / 15
    return abs(sym - fd) / max(1.0, abs(sym), abs(f(x0)))


def random_sim_config(rng, m=8.0, ns=81, t_end=3.0):
    """Random nonnegative rates and history; growth and mortality peak at P = 0."""
    g0, g1 = rng.uniform(0, 0.5, 2)
    mu0, mu1 = rng.uniform(0, 1, 2)
    b, bq = rng.uniform(0, 3), rng.uniform(0, 1)
    r = RateSet(
        f"1 + {g0}*s/(1 + P) + {g1}*sin(s)^2",
        f"{mu0} + {mu1}/(1 + P)",
        f"{b}*exp(tau)*max(0, 1 - {bq}*Q)",
        "1 + 0.1*s",
        float(rng.uniform(0, 0.95)),
        float(rng.uniform(0.2, 1.5)),
        m,
    )
    k = rng.integers(1, 4)
    history = f"{rng.uniform(0, 5):.3f}*max(0, sin({k}*s))^2*(1 + 0.1*delta)^2"
    return SimConfig(r, SizeGrid(ns, m), t_end, history, cfl=float(rng.uniform(0.3, 1.0)))
