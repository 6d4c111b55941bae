import os
import threading
import time
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from src.core.exceptions import AuthFailure, LLMError, ReplyTimeout
from src.utils.logger import logger

# Load environment variables from .env file
load_dotenv()

DEFAULT_MODEL = "gpt-4o-mini"


class LLMProvider(ABC):
    """Abstract base class for chat-completion providers."""

    # Whether one instance may serve concurrent episodes
    share_safe: bool = True

    @abstractmethod
    def generate(self, prompt: str, **kwargs) -> str:
        """Generate text from a prompt."""
        pass

    @abstractmethod
    def generate_with_history(
        self,
        prompt: str,
        conversation_history: List[Dict[str, str]],
        **kwargs
    ) -> str:
        """Generate text with conversation history."""
        pass


class OpenAIProvider(LLMProvider):
    """
    OpenAI-compatible chat-completion provider.

    Any endpoint speaking the chat-completions wire format works through
    ``base_url``. Transient failures are retried with exponential backoff;
    authentication failures are not.
    """

    def __init__(
        self,
        api_key: Optional[str] = None,
        model: str = DEFAULT_MODEL,
        base_url: Optional[str] = None,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.0,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        client: Any = None
    ):
        self.api_key = api_key or os.environ.get(api_key_env)
        self.api_key_env = api_key_env
        self.model = model
        self.base_url = base_url or os.environ.get("OPENAI_API_BASE") or None
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._client = client
        self._slots = threading.BoundedSemaphore(max_in_flight)

        if not self.api_key and client is None:
            logger.warning(f"{api_key_env} not set. OpenAI provider will not be functional.")

    def _get_client(self):
        """Lazy load the OpenAI client."""
        if self._client is None:
            if not self.api_key:
                raise AuthFailure(f"no API token in environment variable {self.api_key_env}")
            try:
                from openai import OpenAI
                self._client = OpenAI(api_key=self.api_key, base_url=self.base_url, timeout=self.timeout)
            except ImportError:
                logger.error("openai package not installed")
                raise LLMError("openai package not installed")
        return self._client

    def _chat(self, messages: List[Dict[str, str]], **kwargs) -> str:
        client = self._get_client()
        temperature = kwargs.pop('temperature', self.temperature)
        last_err: Optional[Exception] = None
        timed_out = False
        for attempt in range(self.max_retries):
            try:
                with self._slots:
                    response = client.chat.completions.create(
                        model=self.model,
                        messages=messages,
                        temperature=temperature,
                        **kwargs
                    )
                return response.choices[0].message.content or ""
            except Exception as e:
                if _is_auth_error(e):
                    logger.error(f"LLM authentication failed: {e}")
                    raise AuthFailure(str(e))
                last_err = e
                timed_out = _is_timeout(e)
                logger.warning(f"LLM request attempt {attempt + 1}/{self.max_retries} failed: {e!r}")
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * (2 ** attempt))
        logger.error(f"LLM request failed after {self.max_retries} attempts: {last_err}")
        if timed_out:
            raise ReplyTimeout(f"no reply after {self.max_retries} attempts: {last_err}")
        raise LLMError(f"request failed after {self.max_retries} attempts: {last_err}")

    def generate(self, prompt: str, **kwargs) -> str:
        """Generate text using a single user message."""
        return self._chat([{"role": "user", "content": prompt}], **kwargs)

    def generate_with_history(
        self,
        prompt: str,
        conversation_history: List[Dict[str, str]],
        **kwargs
    ) -> str:
        """Generate text with conversation history."""
        messages = conversation_history + [{"role": "user", "content": prompt}]
        return self._chat(messages, **kwargs)


def _is_auth_error(error: Exception) -> bool:
    try:
        import openai
        if isinstance(error, (openai.AuthenticationError, openai.PermissionDeniedError)):
            return True
    except ImportError:
        pass
    return getattr(error, 'status_code', None) in (401, 403)


def _is_timeout(error: Exception) -> bool:
    try:
        import openai
        if isinstance(error, openai.APITimeoutError):
            return True
    except ImportError:
        pass
    return isinstance(error, TimeoutError)


class MockProvider(LLMProvider):
    """Mock provider for testing without API access."""

    def __init__(self, responses: Optional[Dict[str, str]] = None, default: Optional[str] = None):
        self.responses = responses or {}
        self.default = default
        self.call_history: List[Dict[str, Any]] = []

    def generate(self, prompt: str, **kwargs) -> str:
        """Generate mock response."""
        self.call_history.append({
            "type": "generate",
            "prompt": prompt,
            "kwargs": kwargs
        })

        # Check for exact match
        if prompt in self.responses:
            return self.responses[prompt]

        # Check for pattern match
        for pattern, response in self.responses.items():
            if pattern.lower() in prompt.lower():
                return response

        if self.default is not None:
            return self.default
        return f"[Mock] Generated response for: {prompt[:50]}..."

    def generate_with_history(
        self,
        prompt: str,
        conversation_history: List[Dict[str, str]],
        **kwargs
    ) -> str:
        """Generate mock response with history."""
        self.call_history.append({
            "type": "generate_with_history",
            "prompt": prompt,
            "history": conversation_history,
            "kwargs": kwargs
        })

        return self.generate(prompt, **kwargs)


class LLMClient:
    """
    Provider-agnostic chat client used by the LLM planner and scorer.
    """

    def __init__(self, provider: Optional[LLMProvider] = None, system_prompt: Optional[str] = None):
        self.provider = provider or self._auto_detect_provider()
        self.system_prompt = system_prompt
        logger.info(f"Using LLM provider: {type(self.provider).__name__}")

    @property
    def share_safe(self) -> bool:
        return self.provider.share_safe

    @staticmethod
    def _auto_detect_provider() -> LLMProvider:
        if os.environ.get("OPENAI_API_KEY"):
            return OpenAIProvider()

        logger.info("No API keys found. Using MockProvider for testing.")
        return MockProvider()

    def generate(self, prompt: str, **kwargs) -> str:
        """
        Generate a reply to ``prompt``.

        Args:
            prompt: Input prompt
            **kwargs: Additional provider-specific arguments

        Returns:
            Generated text
        """
        if self.system_prompt:
            return self.provider.generate_with_history(
                prompt, [{"role": "system", "content": self.system_prompt}], **kwargs
            )
        return self.provider.generate(prompt, **kwargs)

    def generate_with_history(
        self,
        prompt: str,
        conversation_history: List[Dict[str, str]],
        **kwargs
    ) -> str:
        return self.provider.generate_with_history(prompt, conversation_history, **kwargs)


def create_llm_client(provider_type: Optional[str] = None, **options) -> LLMClient:
    """
    Create an LLM client with the specified provider.

    Args:
        provider_type: 'openai', 'mock', or None for auto-detect
        **options: Provider settings (model, base_url, api_key_env, timeout, ...)

    Returns:
        Configured LLMClient instance
    """
    system_prompt = options.pop('system_prompt', None)
    if provider_type == 'openai':
        provider = OpenAIProvider(**options)
    elif provider_type == 'mock':
        provider = MockProvider(**options)
    elif provider_type is None:
        return LLMClient(system_prompt=system_prompt)
    else:
        raise LLMError(f"unknown LLM provider '{provider_type}'")

    return LLMClient(provider, system_prompt=system_prompt)
