"""Smoke test for the inout_py extension: build bodies, plan, sample, check."""

import math

import inout_py as io


def main():
    disk = io.Body.ball([0.0, 0.0], 1.0)
    assert disk.dim == 2 and abs(disk.volume - math.pi) < 1e-12
    assert [0.5, 0.5] in disk and not disk.contains([1.0, 1.0])
    alpha, beta = disk.certificate
    assert (alpha, beta) == (1.0, 1.0)

    annulus = io.Body.exclusion(disk, io.Body.ball([0.0, 0.0], 0.5), 0.75 * math.pi)
    assert [0.75, 0.0] in annulus and [0.1, 0.0] not in annulus

    try:
        io.Body.ball([0.0, 0.0], -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative radius accepted")

    assert abs(io.chi_tail(2, 1.0) - math.exp(-0.5)) < 1e-14

    p = io.plan(q=2.0, eps=0.2, M=1.0, C_PI=4.0, n=2, alpha=alpha, beta=beta)
    assert p["T"] >= 1 and p["N"] >= 1 and 0 < p["h"] < 1

    run = io.run_chain(disk, [0.0, 0.0], 50, p["h"], p["N"], 7)
    again = io.run_chain(disk, [0.0, 0.0], 50, p["h"], p["N"], 7)
    assert run == again and run["outcome"]["kind"] == "success"

    ens = io.run_ensemble(io.Body.cuboid([0.0, 0.0], [1.0, 1.0]), 2000, 1, 0.01, 10**9, 3)
    assert ens["summary"]["failures"] == 0
    uni = io.box_uniformity([0.0, 0.0], [1.0, 1.0], 4, ens["samples"])
    assert uni["p_value"] > 1e-3, uni

    esc = io.escape_check(disk, p["h"], 0.25, 20000, 11)
    assert esc["verdict"] == "Satisfied", esc
    fail = io.failure_check(disk, p, 500, 500, 12)
    assert fail["verdict"] == "Satisfied", fail

    print("smoke test ok")


if __name__ == "__main__":
    main()
