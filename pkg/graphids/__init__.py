# graphids/__init__.py - Application factory for the graph-based intrusion detection pipeline
from flask import Flask

from .extensions import logger

__version__ = "1.0.0"


def create_app(config_name=None):
    """Create the Flask application carrying configuration, logging and CLI commands"""
    app = Flask(__name__)

    try:
        # Load configuration
        from .config import get_config
        config_class = get_config(config_name)
        app.config.from_object(config_class)

        # Initialize extensions
        from .extensions import init_extensions
        init_extensions(app)

        # Register blueprints
        register_blueprints(app)

        logger.debug(f"Application created with {config_class.__name__}")

    except Exception as e:
        logger.error(f"❌ Failed to create application: {e}")
        raise

    return app


def register_blueprints(app):
    """Register the command blueprint"""
    from .cli import bp as cli_bp
    app.register_blueprint(cli_bp)
    logger.debug("CLI blueprint registered")


__all__ = ["create_app", "__version__"]
