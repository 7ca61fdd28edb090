from flask import Blueprint

# Commands attach straight to the app's CLI (flask extract, flask train, ...)
bp = Blueprint("cli", __name__, cli_group=None)

from . import commands  # noqa
