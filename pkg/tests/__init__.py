"""Tests for fcmf"""
