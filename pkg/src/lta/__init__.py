"""Intention-conditioned long-term action anticipation.

Two-stage pipeline: a hierarchical multitask MLP-Mixer classifies observed
clips into (verb, noun) actions plus a video-level intention; an
intention-conditioned variational transformer generates candidate future
action sequences, scored with best-of-K edit distance.
"""

from lta.taxonomy import ActionLabel, ActionSequence, ContextBags, Vocabulary

__all__ = ["ActionLabel", "ActionSequence", "ContextBags", "Vocabulary"]

__version__ = "0.1.0"
