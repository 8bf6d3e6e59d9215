import math
import time

import numpy as np

import sys
sys.path.insert(0, "tests")
from conftest import EPS_LADDER, STANDARD, make_standard_torus

from conelab import functionals as fn
from conelab import geometry as geo
from conelab import ma_solver as ma

t0 = time.time()
g = make_standard_torus()
rhs = ma.make_rhs(g, 0.5, 1e-2, (0.6,))

# 1. exact zeros at phi = 0
z = np.zeros(g.shape)
print("I(0)", fn.i_energy(g, z), "J(0)", fn.j_energy(g, z))
print("ding(0)", fn.ding(g, rhs, z))
print("ding_approx(0)", fn.ding_approx(g, rhs, z))
print("mabuchi(0)", fn.mabuchi(g, rhs, z))

# 2. n=1 identity I = 2J, by-parts
rng = np.random.default_rng(42)
for k in range(3):
    p = geo.random_band_field(64, 2, 0.05, 4, 100 + k)
    i_v, j_v = fn.i_energy(g, p), fn.j_energy(g, p)
    print(f"I={i_v:.12e} 2J={2*j_v:.12e} diff={i_v-2*j_v:.3e}")

# 3. gauge invariance
p = geo.random_band_field(64, 2, 0.05, 4, 7)
for f, name in [(lambda q: fn.i_energy(g, q), "I"),
                (lambda q: fn.j_energy(g, q), "J"),
                (lambda q: fn.ding(g, rhs, q), "ding"),
                (lambda q: fn.ding_approx(g, rhs, q), "ding_approx"),
                (lambda q: fn.mabuchi(g, rhs, q), "mabuchi")]:
    print(name, "gauge diff", abs(f(p + 0.37) - f(p)))

print("elapsed", time.time() - t0)
