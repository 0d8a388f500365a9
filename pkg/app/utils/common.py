import logging
import logging.config
import os

from app.dependencies import get_settings

settings = get_settings()


def setup_logging(level: str = None):
    """
    Sets up logging for the application using a configuration file.
    This ensures standardized logging across the entire application.
    """
    # Construct the path to 'logging.conf', assuming it's in the project's root.
    logging_config_path = settings.logging_config or os.path.join(os.path.dirname(__file__), '..', '..', 'logging.conf')
    # Normalize the path to handle any '..' correctly.
    normalized_path = os.path.normpath(logging_config_path)
    if os.path.exists(normalized_path):
        logging.config.fileConfig(normalized_path, disable_existing_loggers=False)
    else:
        logging.basicConfig(format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    default_level = "DEBUG" if settings.debug else settings.log_level
    logging.getLogger("app").setLevel((level or default_level).upper())
