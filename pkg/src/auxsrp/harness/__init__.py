"""Experiment harness: configs, runners and the ``auxsrp`` command line."""

from auxsrp.harness.experiments import (CampaignResult, RunContext, run_campaign, run_locate,
                                        run_model_sweep, run_rir)

__all__ = ["CampaignResult", "RunContext", "run_campaign", "run_locate", "run_model_sweep", "run_rir"]
