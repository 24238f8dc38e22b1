"""Handwriting-line transcription from pen trajectories: signature features, a
convolutional-recurrent CTC network and LM-fused beam search."""

__version__ = "0.1.0"
