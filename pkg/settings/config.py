from builtins import bool, int, str
from typing import Optional
from pydantic import Field
from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    # Output configuration
    output_dir: str = Field(default='results', description="Default directory for result tables and plot data")
    # Logging configuration
    log_level: str = Field(default='INFO', description="Level applied to the 'app' logger")
    logging_config: Optional[str] = Field(default=None, description="Path to a logging.conf file; defaults to the repository copy")
    debug: bool = Field(default=False, description="Forces the 'app' logger to DEBUG unless a level is passed explicitly")
    # Execution
    max_jobs: int = Field(default=1, ge=1, description="Default worker count for the experiment matrix")
    progress_every: int = Field(default=10000, ge=1, description="Steps between INFO progress lines during training")

    class Config:
        # If your .env file is not in the root directory, adjust the path accordingly.
        env_file = ".env"
        env_file_encoding = 'utf-8'
        env_prefix = "ICS_"
        extra = "ignore"

# Instantiate settings to be imported in your application
settings = Settings()
