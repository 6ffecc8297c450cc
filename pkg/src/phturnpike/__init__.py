"""Minimal-energy optimal control and manifold turnpikes for port-Hamiltonian systems."""
