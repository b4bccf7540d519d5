"""Compact, hardware-constrained 1D-CNN traffic classifiers and their
adversarial robustness: flow encoding, cost model, evolutionary search,
FGSM/PGD attacks and adversarial fine-tuning."""

__version__ = "0.1.0"
