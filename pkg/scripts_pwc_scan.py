import time

import numpy as np

import delaydense as dd
from delaydense.core import history_at, integrate
from delaydense.errors import StaggerExhausted
from delaydense.transient import (discover_attractors, modified_stagger_step,
                                  region_from_templates)

pwc = dd.make_system('pwc', {'alpha': 3.25, 'c': 20.5, 'x1': 1, 'x2': 2})
n_mesh = 256
seeds = [(0.1, -3.8), (0.1, 0.95), (0.1, 2.85), (0.5, 0.95), (0.0132, 1.825),
         (1.5, 1.0), (2.5, 0.5), (0.8, -2.0)]
tm = discover_attractors(pwc, seeds, 600, n_mesh, max_period=15.0)
region = region_from_templates(tm, delta=0.08, bbox=(-1.5, 7.5))
pA = (0.0132, 1.830585507246372)
x0 = history_at(integrate(pwc, dd.linear(*pA), 8.0, n_mesh), 2.0, n_mesh)
for seed in (4, 23, 11, 37):
    for eps, Tstar in ((0.3, 12), (0.05, 13)):
        t0 = time.time()
        try:
            run = modified_stagger_step(pwc, region, x0, T_star=Tstar,
                                        eps=eps, N_tries=5, n_steps=550,
                                        seed=seed, t_cap=60, eps_min=1e-14,
                                        attempt_cap=3000,
                                        stall_budget=120_000)
            tag = 'OK'
        except StaggerExhausted as e:
            run = e.partial_run
            tag = 'stall'
        print(f'seed={seed} eps={eps} T*={Tstar}: {tag} steps={run.n_steps} '
              f'({time.time()-t0:.0f}s)', flush=True)
        if run.n_steps >= 500:
            print('  -> got a full run; stopping scan', flush=True)
            raise SystemExit
