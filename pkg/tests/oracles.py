"""Independent reference computations used to freeze expected values.

Nothing in here imports the package: each function is a direct loop over the
joint states so it can be checked by eye.
"""

import itertools
import math


def logistic(x):
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def joint_states(support, pmf, links, weights, w_d, clamp=None):
    """Yield (prob, d, masteries, p_correct) over every (D, m) state."""
    clamp = clamp or {}
    n = len(links)
    for d, pd in zip(support, pmf):
        for m in itertools.product((0, 1), repeat=n):
            prob = pd
            for j, ((a, b), mj) in enumerate(zip(links, m)):
                q = float(clamp[j]) if j in clamp else logistic(a - b * d)
                prob *= q if mj else 1.0 - q
            logit = weights[0] + sum(w * mj for w, mj in zip(weights[1:], m)) - w_d * d
            yield prob, d, m, logistic(logit)


def p_correct_marginal(support, pmf, links, weights, w_d, clamp=None):
    return sum(prob * pc for prob, _, _, pc in joint_states(support, pmf, links, weights, w_d, clamp))


def p_do(support, pmf, links, weights, w_d, concept, value):
    """P(p=1 | do(m_concept=value)) by mutilating the mastery link."""
    return p_correct_marginal(support, pmf, links, weights, w_d, {concept: value})


def p_conditional(support, pmf, links, weights, w_d, concept, value):
    num = den = 0.0
    for prob, _, m, pc in joint_states(support, pmf, links, weights, w_d):
        if m[concept] == value:
            num += prob * pc
            den += prob
    return num / den


def brute_true_effect(support, pmf, links, weights, w_d, concept):
    return (p_do(support, pmf, links, weights, w_d, concept, 1)
            - p_do(support, pmf, links, weights, w_d, concept, 0))


# Two-concept confounded fixture: a=(0,0), b=(4,4), w=(-1,2,2), w_D=3, D in {0,1}.
TABLE_X = dict(support=[0.0, 1.0], pmf=[0.5, 0.5], links=[(0.0, 4.0), (0.0, 4.0)],
               weights=[-1.0, 2.0, 2.0], w_d=3.0)


def mat2_inv(m):
    (a, b), (c, d) = m
    det = a * d - b * c
    return [[d / det, -b / det], [-c / det, a / det]]


def mat2_mul(x, y):
    return [[sum(x[i][k] * y[k][j] for k in range(2)) for j in range(2)] for i in range(2)]


def reduced_cov_2x2(b0, sigma):
    inv = mat2_inv(b0)
    inv_t = [[inv[0][0], inv[1][0]], [inv[0][1], inv[1][1]]]
    return mat2_mul(mat2_mul(inv, sigma), inv_t)


def bm25_term(tf, df, n_docs, dl, avgdl, k1=1.2, b=0.75):
    idf = math.log((n_docs - df + 0.5) / (df + 0.5) + 1.0)
    return idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))


if __name__ == "__main__":
    fx = TABLE_X
    print("table-x P(p=1)      ", repr(p_correct_marginal(**fx)))
    for c in (0, 1):
        print(f"table-x e*[{c}]        ", repr(brute_true_effect(**fx, concept=c)))
        print(f"table-x do({c}=1)      ", repr(p_do(**fx, concept=c, value=1)))
        print(f"table-x P(p|m{c}=1)-P(p|m{c}=0)",
              repr(p_conditional(**fx, concept=c, value=1) - p_conditional(**fx, concept=c, value=0)))
    print("reduced cov", reduced_cov_2x2([[1, 0], [-0.5, 1]], [[1, 0], [0, 1]]))
