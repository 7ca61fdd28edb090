# run.py - Command-line entry point for graph-ids
import os

from flask.cli import FlaskGroup

from graphids import create_app


def create_application():
    """Create the application with the configuration named by GIDS_ENV"""
    return create_app(os.environ.get("GIDS_ENV", "production"))


cli = FlaskGroup(create_app=create_application, add_default_commands=False,
                 help="Graph-based intrusion detection: extract, train, evaluate, pipeline, synthesize.")

if __name__ == "__main__":
    cli()
