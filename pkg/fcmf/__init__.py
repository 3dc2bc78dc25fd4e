"""FCMF - Fine-grained cross-modal fusion for multimodal aspect-category sentiment analysis"""

__version__ = "0.1.0"
