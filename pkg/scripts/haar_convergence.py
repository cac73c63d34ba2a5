"""Convergence table of the shifted Haar and dyadic projections.

Prints L^2 errors and successive ratios for a Lipschitz path vanishing at 0,
the same path shifted off zero (ratio drifts to 2^{-1/2}) and a step path.
"""

from jumpnls.experiments import haar_table, lipschitz_test_path
from jumpnls.paths import CadlagPath


def print_table(title, x, levels):
    t = haar_table(x, levels)
    print(title)
    print(f"{'n':>3} {'shifted':>12} {'ratio':>7} {'dyadic':>12} {'ratio':>7}")
    for i, n in enumerate(levels):
        print(f"{n:3d} {t['shifted_l2'][i]:12.4e} {t['shifted_ratio'][i]:7.3f} "
              f"{t['dyadic_l2'][i]:12.4e} {t['dyadic_ratio'][i]:7.3f}")
    print()


if __name__ == "__main__":
    levels = list(range(1, 11))
    x = lipschitz_test_path()
    print_table("sin(2 pi s) + s", x, levels)
    print_table("1 + sin(2 pi s) + s", x + CadlagPath.constant(1.0), levels)
    print_table("step at 1/3", CadlagPath.steps([0.0, 1 / 3], [0.0, 1.0], 1.0), levels)
