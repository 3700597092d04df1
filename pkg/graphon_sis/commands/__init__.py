from graphon_sis.commands.experiment_commands import cli

__all__ = ['cli']
