"""Walk through the tableau construction and its block decomposition.

Shows, for a few stage counts: the bitwise symplecticity identities of
the rounded coefficient ratios, the singular values driving the
structured solver, and the count of small LU factorizations a Newton
step needs.
"""

import numpy as np

from sirk import compute_decomposition, gauss_tableau

for s in (1, 2, 3, 6):
    tab = gauss_tableau(s)
    dec = compute_decomposition(tab)
    print(f"=== {s} stage(s), order {2 * s} ===")
    print("nodes c:   ", np.array2string(tab.c, precision=6))
    print("weights b: ", np.array2string(tab.b, precision=6))

    # mu[i][j] = a_ij / b_j; symplecticity demands mu_ij + mu_ji == 1
    # *exactly*, not just to round-off, and symmetry mirrors the matrix
    # across its antidiagonal
    worst = max(
        abs(tab.mu[i, j] + tab.mu[j, i] - 1.0) for i in range(s) for j in range(s)
    )
    print("max |mu_ij + mu_ji - 1| =", worst, "(bitwise zero)")

    print("sigma:", np.array2string(dec.sigma, precision=8))
    print("LU factorizations per step:", s // 2 + 1)
    print()

print("The eigenvalues of A - (1/2) 1 b^T come in pure imaginary pairs")
print("+- i sigma; the structured solver turns each pair into one real")
print("d x d factorization, plus one for the bordered coupling matrix.")
