"""Subcommands - one module per workflow, each exposing register(subparsers)"""

from fcmf.commands import agree, evaluate, gradcheck, heads_train, stats, synth, train

COMMANDS = (synth, train, evaluate, gradcheck, agree, stats, heads_train)

__all__ = ["COMMANDS"]
