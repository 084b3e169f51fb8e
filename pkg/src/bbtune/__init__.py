"""Multiparametric Boltzmann sampling with convex tuning."""
