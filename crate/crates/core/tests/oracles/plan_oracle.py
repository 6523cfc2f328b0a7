"""Independent evaluation of the parameter schedule for the frozen tuples.

Prints Rust literals consumed by tests/acceptance.rs. Operation order
mirrors the library so results agree bit for bit before rounding.
"""
import math

TUPLES = [
    # q, eps, M, C_PI, alpha, beta, n
    (2.0, 0.2, 1.0, 1.0, 1.0, 1.0, 2),
    (2.0, 0.2, 1.0, 4.0, 4.0 / 3.0, 1.0, 2),
    (2.0, 0.1, 1.0, 1.25, 1.0, 1.0, 2),
    (3.0, 0.05, 2.0, 1.0, 1.0, 2.0, 2),
    (2.0, 0.4, 10.0, 2.0, 2.0, 0.5, 3),
    (4.0, 0.3, 100.0, 1.0, 1.0, 1.0, 2),
    (2.0, 0.2, 1.0, 1.0, 2.0, 3.25 ** 0.5, 2),
    (2.5, 0.15, 5.0, 1.5, 1.5, 1.0, 4),
    (2.0, 0.01, 1.0, 1.0, 1.0, 1.0, 2),
    (6.0, 0.25, 1.0, 10.0, 1.0, 0.2, 5),
    (2.0, 0.2, 3.0, 1.0, 10.0, 1.0, 2),
    (3.0, 0.49, 1.0, 1.0, 1.0, 1.0, 3),
    (2.0, 0.2, 1.0, 1.0, 1.0, 0.05, 2),
    (2.0, 0.3, 50.0, 1.3, 2.5, 0.7, 3),
    (8.0, 0.1, 1.0, 1.0, 1.0, 1.0, 2),
    (2.0, 0.05, 20.0, 2.0, 1.2, 0.9, 2),
    (2.0, 0.2, 1.0, 4.0, 1.0, 2.0, 2),
    (3.5, 0.35, 7.0, 1.5, 3.0, 0.6, 4),
    (2.0, 0.45, 1.5, 1.75, 1.0, 1.0, 5),
    (2.0, 0.12, 4.0, 1.0, 1.0, 1.25, 3),
]


def evaluate(q, eps, M, c, alpha, beta, n):
    n = float(n)
    beta = max(beta, 1.0 / n)
    eps_prime = eps / 2.0
    eta = eps / 8.0
    inner = n + math.log(3.0 * (n + 1.0) * alpha * M / eta)
    z = 4.0 * q * c * beta * beta * n * n * inner * math.log(M / eps_prime)
    t_real = 2.0 * z * math.log(z)
    t = math.ceil(t_real)
    s = 3.0 * t * M / eta
    h = 1.0 / (2.0 * beta * beta * n * n * n * (1.0 + math.log((n + 1.0) * alpha * s) / n))
    big_n = math.ceil(8.0 * alpha * s * math.log(s))
    rate = math.log1p(h / c)
    t0 = max(0.0, math.ceil(q * (math.log(M) - 1.0) / (2.0 * rate)))
    t_tilde = t0 + q * math.log(1.0 / eps_prime) / rate
    return z, t_real, t, s, h, big_n, int(t0), t_tilde


for tup in TUPLES:
    z, t_real, t, s, h, big_n, t0, t_tilde = evaluate(*tup)
    q, eps, M, c, alpha, beta, n = tup
    print(f"    ([{q!r}, {eps!r}, {M!r}, {c!r}, {alpha!r}, {beta!r}], {n}, "
          f"[{z!r}, {t_real!r}, {s!r}, {h!r}, {t_tilde!r}], [{t}, {big_n}, {t0}]),")
