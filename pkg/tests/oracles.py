"""Independent reference computations used only by the tests."""
import numpy as np

# (mean function, d mean / d eta, variance function V(mean)) per family.
FAMILY_PARTS = {
    "bernoulli_logit": (lambda e: 1 / (1 + np.exp(-e)), lambda e: np.exp(-e) / (1 + np.exp(-e)) ** 2, lambda m: m * (1 - m)),
    "poisson_log": (np.exp, np.exp, lambda m: m),
    "normal_identity": (lambda e: e, lambda e: np.ones_like(e), lambda m: np.ones_like(m)),
    "exponential_inverse": (lambda e: 1 / e, lambda e: -1 / e**2, lambda m: m**2),
    "exponential_neg_inverse": (lambda e: -1 / e, lambda e: 1 / e**2, lambda m: m**2),
}

START = {
    "bernoulli_logit": (0.0, 0.0),
    "poisson_log": (0.0, 0.0),
    "normal_identity": (0.0, 0.0),
    "exponential_inverse": (1.0, 0.0),
    "exponential_neg_inverse": (-1.0, 0.0),
}


def irls_fit(y, t, tag, phi=1.0, tol=1e-14, max_iter=200):
    """Fisher scoring on the design matrix [1, t].

    Returns (mu, delta, se_delta) with the standard error from the inverse
    expected information ``X' W X / phi``, ``W = h'(eta)^2 / V(mean)``.
    """
    mean, dmean, var = FAMILY_PARTS[tag]
    X = np.column_stack([np.ones(len(t)), np.asarray(t, dtype=float)])
    y = np.asarray(y, dtype=float)
    beta = np.array(START[tag], dtype=float)
    if tag.startswith("exponential"):
        # start from the arm-0 mean so the predictor stays in its domain
        sign = 1.0 if tag == "exponential_inverse" else -1.0
        beta[0] = sign / y[t == 0].mean()
    for _ in range(max_iter):
        eta = X @ beta
        m = mean(eta)
        d = dmean(eta)
        w = d**2 / var(m)
        z = eta + (y - m) / d
        XtW = X.T * w
        new = np.linalg.solve(XtW @ X, XtW @ z)
        step = 1.0
        if tag == "exponential_inverse":
            while np.any(X @ (beta + step * (new - beta)) <= 0):
                step /= 2
        elif tag == "exponential_neg_inverse":
            while np.any(X @ (beta + step * (new - beta)) >= 0):
                step /= 2
        new = beta + step * (new - beta)
        if np.max(np.abs(new - beta)) < tol * (1 + np.max(np.abs(beta))):
            beta = new
            break
        beta = new
    eta = X @ beta
    w = dmean(eta) ** 2 / var(mean(eta))
    cov = phi * np.linalg.inv((X.T * w) @ X)
    return beta[0], beta[1], float(np.sqrt(cov[1, 1]))


def efron_abs_stationary(p, k_max=200):
    """Stationary law of |D_n| for Efron's coin, by solving the chain.

    From 0 the walk moves to 1; from k >= 1 it moves down with probability
    ``p`` and up with ``1 - p``.
    """
    P = np.zeros((k_max + 1, k_max + 1))
    P[0, 1] = 1.0
    for k in range(1, k_max):
        P[k, k - 1] = p
        P[k, k + 1] = 1 - p
    P[k_max, k_max - 1] = 1.0
    A = np.vstack([P.T - np.eye(k_max + 1), np.ones(k_max + 1)])
    b = np.zeros(k_max + 2)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


class ScriptedUniforms:
    """Stand-in generator returning a fixed sequence of uniforms."""

    def __init__(self, values):
        self.values = list(values)
        self.pos = 0

    def random(self):
        v = self.values[self.pos]
        self.pos += 1
        return v
