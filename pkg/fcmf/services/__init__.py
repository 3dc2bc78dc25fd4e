"""Workflow services (dataset, text, pipeline, training, evaluation, metrics, storage)"""
