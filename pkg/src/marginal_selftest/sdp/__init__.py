"""Affine-PSD-block problems, an interior-point solver and SDPA export."""
from .certificate import (CertificateReport, DualInequality, TemplateMismatch, exposing_certificate,
                          extract_dual_inequality, verify_certificate)
from .problem import Block, SdpProblem, SdpSolution
from .sdpa import export_sdpa, parse_sdpa, read_sdpa, write_sdpa
from .solver import SolverOptions, solve

__all__ = ["Block", "SdpProblem", "SdpSolution", "SolverOptions", "solve", "CertificateReport",
           "DualInequality", "TemplateMismatch", "exposing_certificate", "extract_dual_inequality",
           "verify_certificate", "export_sdpa", "parse_sdpa", "read_sdpa", "write_sdpa"]
