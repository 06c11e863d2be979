"""Spectral inequalities, Bernstein estimates and null-control experiments for
anisotropic Shubin operators ``(-Delta)^m + |x|^(2k)`` on the line."""
