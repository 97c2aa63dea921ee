from ._core import (
    Kernel,
    Poisson,
    Space,
    __version__,
    approximation_split,
    ball_profile,
    capacity,
    lp_norm,
    nontangential_fraction,
    profile,
    quasi_additivity,
    random_cube_function,
    singleton_capacity,
)

__all__ = [
    "Kernel",
    "Poisson",
    "Space",
    "__version__",
    "approximation_split",
    "ball_profile",
    "capacity",
    "lp_norm",
    "nontangential_fraction",
    "profile",
    "quasi_additivity",
    "random_cube_function",
    "singleton_capacity",
]
