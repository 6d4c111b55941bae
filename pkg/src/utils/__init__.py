"""
HECG Utils Module

Logging and the chat-completion client.
"""

from src.utils.logger import setup_logger, set_level, logger
from src.utils.llm_client import (
    LLMClient,
    LLMProvider,
    OpenAIProvider,
    MockProvider,
    create_llm_client
)

__all__ = [
    "setup_logger",
    "set_level",
    "logger",
    "LLMClient",
    "LLMProvider",
    "OpenAIProvider",
    "MockProvider",
    "create_llm_client"
]
