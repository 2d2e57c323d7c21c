"""Evolutionary EVM bytecode fuzzer with data-dependency guidance, taint
tracking and on-demand constraint solving."""

from .campaign import Campaign, CampaignConfig, run_campaign, write_report
from .detectors import ALL_KINDS, DetectorSuite, Finding

__version__ = "0.1.0"

__all__ = [
    "ALL_KINDS",
    "Campaign",
    "CampaignConfig",
    "DetectorSuite",
    "Finding",
    "run_campaign",
    "write_report",
    "__version__",
]
