"""Smoke test for the isp extension module: python3 python/smoke_test.py"""

import math

import isp


def main():
    grid = isp.SpatialGrid(1, 63)
    tg = isp.TimeGrid(1.0, 64)
    assert grid.dof == 63 and abs(grid.h - math.pi / 64) < 1e-15
    assert len(tg.times()) == 65

    # single sine mode: u(T) = (1 - e^{-1}) sin x up to discretization error
    f = [math.sin(x) for x, _ in grid.points()]
    g = isp.forward_solve(grid, tg, f)
    k = 1 - math.exp(-1)
    assert max(abs(u - k * s) for u, s in zip(g, f)) < 1e-3

    g_delta, delta = isp.add_noise(grid, g, 1e-2, seed=7)
    assert delta == grid.l2_distance(g_delta, g)
    assert isp.add_noise(grid, g, 1e-2, seed=7) == (g_delta, delta)

    beta = tg.tau * math.sqrt(delta)
    pint = isp.reconstruct(grid, tg, "pqbvm", beta, g_delta, solver="pint")
    direct = isp.reconstruct(grid, tg, "pqbvm", beta, g_delta, solver="sparse_lu")
    gap = grid.l2_distance(pint["f"], direct["f"])
    assert gap <= 1e-8 * grid.l2_norm(direct["f"]), gap
    assert pint["residual"] < 1e-10

    d = isp.diagonalize(256, 1e-2 / 256)
    assert d["w_method"] == "closed_form" and all(abs(mu) > 1 for mu in d["mu"])

    rows = isp.run_example(1, "pqbvm", 64, 64, eps=[1e-2], seeds=[0, 1, 2])
    assert len(rows) == 3 and all(r["status"] == "ok" for r in rows)
    assert rows[0]["schema_version"] == isp.SCHEMA_VERSION

    cond = isp.cond_study([16, 128], [1e-4])
    assert {r["alpha_choice"] for r in cond} == {"zero", "alpha_star"}

    bench = isp.bench(1, 8, 8)
    assert [r["path"] for r in bench] == ["pint_serial", "pint_parallel", "sparse_direct"]

    try:
        isp.SpatialGrid(3, 4)
    except ValueError:
        pass
    else:
        raise AssertionError("dim=3 accepted")

    print("isp smoke test ok:", rows[0]["error_l2"], d["kappa1"])


if __name__ == "__main__":
    main()
