import logging

from pydantic_settings import BaseSettings
from rich.logging import RichHandler


class Settings(BaseSettings):
    api_host: str = "0.0.0.0"
    api_port: int = 8000
    app_title: str = "NTS PIDE Pricer API"
    app_version: str = "0.1.0"
    app_description: str = "Two-asset option prices under Normal Tempered Stable Lévy models"

    out_dir: str = "results"
    threads: int = 1
    seed: int = 20240521
    log_level: str = "INFO"
    # the API runs the solver synchronously, so keep requests small
    api_max_nx: int = 64
    api_max_paths: int = 200_000

    class Config:
        env_file = ".env"
        env_prefix = "PIDE_"


settings = Settings()


def configure_logging(level: str | None = None) -> None:
    """Route library logging through a rich handler."""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )
