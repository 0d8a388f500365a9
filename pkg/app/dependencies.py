from builtins import str
from functools import lru_cache
from typing import Optional

from settings.config import Settings


@lru_cache()
def get_settings() -> Settings:
    """Return process settings (environment and ``.env``)."""
    return Settings()


def load_run_config(path: Optional[str] = None):
    """Run configuration from ``path``, or model defaults when no file is given."""
    from app.utils.config_loader import RunConfig, load_config_file

    if path is None:
        return RunConfig()
    return load_config_file(path)
