"""Utilities (logging, text preprocessing, FCMT codec)"""
