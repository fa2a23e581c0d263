"""Independent derivations of the reference values frozen into the test suite.

Uses sympy for symbolic quantities and scipy's DOP853 at tight tolerances or
closed-form solutions for trajectories; none of it imports orbitforge.
Run: python tools/derive_oracles.py
"""

import math

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

th, w, a, b, om = sp.symbols("theta omega a b omega_l", real=True)

# pendulum energy and its gradient
Hp = -(sp.cos(th) - sp.Rational(1, 2)) ** 2 + w**2 / 2
grad = [sp.diff(Hp, v) for v in (th, w)]
print("grad H_p(0.3, 0.4) =", [float(g.subs({th: 0.3, w: 0.4})) for g in grad])
print("H_p(pi/4, 0) =", float(Hp.subs({th: sp.pi / 4, w: 0})))
print("d2 H_p/dtheta2 at 0 =", float(sp.diff(Hp, th, 2).subs(th, 0)))
Hs = Hp.subs({th: sp.pi / 4, w: 0})
print("Q(0,0)/gamma1 =", float(Hp.subs({th: 0, w: 0}) - Hs))

# radius where the Hessian of H_p stops being positive definite (omega block is 1)
r_hess = sp.nsolve(sp.diff(Hp, th, 2), th, 0.5)
print("Hessian PD radius =", float(r_hess))
# smallest ball around 0 on which max H_p exceeds H_p*: boundary point maximizing H_p
# max over circle of radius r of H_p; solve max = H_p*
def hp_max(r):
    s = np.linspace(0, 2 * np.pi, 200001)
    t, v = r * np.cos(s), r * np.sin(s)
    return np.max(-(np.cos(t) - 0.5) ** 2 + 0.5 * v**2)
lo, hi = 0.0, 2.0
for _ in range(60):
    mid = 0.5 * (lo + hi)
    lo, hi = (mid, hi) if hp_max(mid) <= float(Hs) else (lo, mid)
print("level radius =", hi)

# pendulum local closed loop: Phi' symbolic
gam = sp.symbols("gamma", positive=True)
Phi = Hp - Hs
u = 2 * sp.sin(th) + w * gam * Phi * sp.cos(th)
f = sp.Matrix([w, sp.sin(th) - u * sp.cos(th)])
phidot = sp.simplify(sp.Matrix([grad]).dot(f))
print("Phi' + gamma w^2 cos^2 Phi =", sp.simplify(phidot + gam * w**2 * sp.cos(th) ** 2 * Phi))
val = phidot.subs({th: 0.3, w: 0.4, gam: 5})
print("Phi'(0.3, 0.4), gamma=5 =", float(val))
print("dH_p(0.2, 0.1), gamma=5 =", float(phidot.subs({th: 0.2, w: 0.1, gam: 5})))

def pend_local(t, x, g=5.0):
    c = math.cos(x[0])
    P = g * (-(c - 0.5) ** 2 + 0.5 * x[1] ** 2 - float(Hs))
    u_ = 2 * math.sin(x[0]) + x[1] * P * c
    return [x[1], math.sin(x[0]) - u_ * c]

sol = solve_ivp(pend_local, (0, 10), [0.1 * math.pi, 0.0], method="DOP853", rtol=1e-13, atol=1e-14)
print("pendulum local x(10) from (0.1pi, 0) =", list(sol.y[:, -1]))

# induction motor, MSEA feedback; closed form of the transverse coordinates
R, bs, ws, k = 1.0, 1.0, 5.0, 1.0
def im(t, x):
    r = math.hypot(x[0], x[1])
    e = k / bs * (x[2] - ws)
    u1 = (bs * x[0] + e * x[1]) / r
    u2 = (bs * x[1] - e * x[0]) / r
    return [-R * x[0] - x[2] * x[1] + R * u1, -R * x[1] + x[2] * x[0] + R * u2, x[0] * u2 - x[1] * u1]

x0 = [0.3, 0.1, 0.0]
sol = solve_ivp(im, (0, 5), x0, method="DOP853", rtol=1e-13, atol=1e-14)
print("IM x(5) from (0.3, 0.1, 0) =", list(sol.y[:, -1]))
z10 = math.hypot(0.3, 0.1) - bs
t = 5.0
z1 = z10 * math.exp(-R * t)
z2 = (0.0 - ws) * math.exp(-(k / bs) * (bs * t + z10 * (1 - math.exp(-R * t)) / R))
print("closed form z(5) =", z1, z2, " vs ivp", math.hypot(*sol.y[:2, -1]) - bs, sol.y[2, -1] - ws)

# matching residual of the IM design with R33 + 0.1 at (1.5, 0.2, 3.0)
x1, x2, xl = sp.symbols("x1 x2 xl", real=True)
Rs, B, W, K = 1, 1, 5, 1
r = sp.sqrt(x1**2 + x2**2)
J = sp.Matrix([[0, -xl * r / (r - B), K * Rs / B * x2 / r],
               [xl * r / (r - B), 0, -K * Rs / B * x1 / r],
               [-K * Rs / B * x2 / r, K * Rs / B * x1 / r, 0]])
H = (r - B) ** 2 / 2 + (xl - W) ** 2 / 2
gH = sp.Matrix([sp.diff(H, v) for v in (x1, x2, xl)])
f_ = sp.Matrix([-Rs * x1 - xl * x2, -Rs * x2 + xl * x1, 0])
g_ = sp.Matrix([[Rs, 0], [0, Rs], [-x2, x1]])
gperp = sp.Matrix([[x2, -x1, Rs]]) / sp.sqrt(x1**2 + x2**2 + Rs**2)
pt = {x1: sp.Rational(3, 2), x2: sp.Rational(1, 5), xl: 3}
for delta in (0, sp.Rational(1, 10)):
    Rm = sp.diag(Rs, Rs, K / B * r + delta)
    res = (gperp * (f_ - (J - Rm) * gH)).subs(pt)
    print(f"matching residual, delta={delta}:", float(sp.Abs(res[0])))
