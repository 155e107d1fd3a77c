"""Bi-monomeric Becker-Doring simulation and asymptotic checks."""
