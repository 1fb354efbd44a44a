"""Multirate GARK time integrators with step and internal-stage predictor-corrector coupling."""
