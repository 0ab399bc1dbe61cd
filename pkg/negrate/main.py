import logging

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from .config import config
from .routes import api

logging.basicConfig(level=config.log_level)

app = FastAPI(title="negrate")
app.include_router(api.router)
# read-only pricing service, any origin may call it
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_methods=["GET", "POST"],
    allow_headers=["*"],
)
