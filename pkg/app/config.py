import os
from dotenv import load_dotenv
from functools import lru_cache

load_dotenv()


class Settings:
    def __init__(self):
        self.threads = max(1, int(os.getenv("MACHLAB_THREADS", "1")))
        self.output_dir = os.getenv("MACHLAB_OUTPUT_DIR", "runs")
        self.log_level = os.getenv("MACHLAB_LOG_LEVEL", "INFO").upper()


@lru_cache()
def get_settings() -> Settings:
    return Settings()
