"""Numerical construction and verification of sectorial solutions of a
singularly perturbed PDE built from iterated Laplace transforms."""

from .problem import Polynomial, ProblemSpec, worked_example_problem

__version__ = "0.1.0"
__all__ = ["Polynomial", "ProblemSpec", "worked_example_problem", "__version__"]
