# Independent straight-line evaluator used to freeze expected values for the
# integration tests. Plain numpy, no shared code with the Rust crate.
import numpy as np

np.set_printoptions(precision=17)
A = np.zeros((4, 4))
for i, j in [(1, 2), (2, 3), (3, 4), (1, 3)]:
    A[i - 1, j - 1] = A[j - 1, i - 1] = 1.0
L = np.diag(A.sum(1)) - A
p = np.array([2.0, 4.0, 6.0, 8.0])
lam = 0.1
lo = np.array([-11.0 + i for i in range(1, 5)])
hi = np.array([8.0 - i for i in range(1, 5)])
x1 = np.array([1.0, 0.0, 5.0, -1.0])
v1 = np.zeros(4)


def sel(x, pi, eps):
    if x < -eps / 2:
        return x - pi - lam - lam * eps / x
    if x <= eps / 2:
        return x - pi + lam
    return x - pi + lam - lam * eps / x


def f_tilde(x):
    return sum(0.5 * (x[i] - p[i]) ** 2 + lam * abs(x[i]) for i in range(4))


def phi(x, v):
    return f_tilde(x) + v @ L @ x + 0.5 * x @ L @ x


eps = alpha = 1.5
g = np.array([sel(x1[i], p[i], eps) for i in range(4)])
top = g + L @ v1 + L @ x1
bot = -L @ x1
print("g", repr(g))
print("T top", repr(top))
print("T bottom", repr(bot))
xn = np.clip(x1 - alpha * top, lo, hi)
vn = v1 + alpha * L @ x1
print("x2", repr(xn), "v2", repr(vn))
print("phi(x1,0)", repr(phi(x1, v1)))

# saddle: x* = 4, g* = 4.1 - 2i, n4 = 3.6
gs = 4.0 - p + lam
n = np.array([0.0, 0.0, 0.0, -gs.sum()])
print("g*", repr(gs), "n", repr(n))
vs = np.linalg.lstsq(L, -(gs + n), rcond=None)[0]
vs -= vs.mean()
print("v*", repr(vs))
xs = np.full(4, 4.0)
fstar = f_tilde(xs)
print("f*", repr(fstar))
delta = phi(x1, vs) - phi(xs, vs) + 0.5 * x1 @ L @ x1
print("delta(x1)", repr(delta))
print("|x1-x*|", repr(np.linalg.norm(x1 - xs)), "sqrt51", repr(np.sqrt(51.0)))

# normalized step, c = 0.1, D = 3 (all agents share the max after 3 rounds)
xhat = L @ x1
vhat = L @ v1
norms = np.sqrt((g + xhat + vhat) ** 2 + xhat ** 2)
gamma = 1.0 / max(0.1, norms.max())
print("||T^i||", repr(norms))
step = alpha * gamma
print("x2 normalized", repr(np.clip(x1 - step * (g + xhat + vhat), lo, hi)),
      "v2 normalized", repr(v1 + step * xhat))

# unconstrained minimizer of the lasso objective by grid
grid = np.linspace(-20, 20, 4000001)
vals = sum(0.5 * (grid - pi) ** 2 for pi in p) + 4 * lam * np.abs(grid)
print("unconstrained argmin", grid[vals.argmin()])
g2 = np.linspace(5, 6, 100001)
print("N=2 constrained argmin", g2[((g2 - 0) ** 2 / 2 + (g2 - 2) ** 2 / 2).argmin()])


# full plain and normalized runs, alpha_k = eps_k = 3/(k+1), k = 1..1e5
def run(normalized, iters=100000):
    x, v = x1.copy(), v1.copy()
    first = None
    over = np.abs(x).max()
    for k in range(1, iters + 1):
        if first is None and np.abs(x - 4).max() <= 0.1 and np.linalg.norm(L @ x) <= 0.1:
            first = k
        a = e = 3.0 / (k + 1)
        gk = np.array([sel(x[i], p[i], e) for i in range(4)])
        xh, vh = L @ x, L @ v
        if normalized:
            nr = np.sqrt((gk + xh + vh) ** 2 + xh ** 2)
            a = a / max(0.1, nr.max())
        x, v = np.clip(x - a * (gk + xh + vh), lo, hi), v + a * xh
        if k + 1 <= 100:
            over = max(over, np.abs(x).max())
    return first, over, x


for name, flag in [("plain", False), ("normalized", True)]:
    first, over, xf = run(flag)
    print(name, "first crossing k", first, "overshoot", over, "x_final", repr(xf))
