import os

# Prefer env vars (CI/batch hosts), fallback to local dev defaults
ISOWEB_THREADS = int(os.getenv("ISOWEB_THREADS", "1"))
ISOWEB_LOG_LEVEL = os.getenv("ISOWEB_LOG_LEVEL", "INFO")
ISOWEB_OUTPUT_DIR = os.getenv("ISOWEB_OUTPUT_DIR", "out")
