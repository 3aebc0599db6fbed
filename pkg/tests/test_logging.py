import structlog

from attnhar.core.config import Environment, settings
from attnhar.core.logging import bind_run_context, get_logger


def test_settings_in_testing_mode():
    assert settings.ENVIRONMENT == Environment.TESTING
    assert settings.is_testing()
    assert settings.SHOW_PROGRESS is False


def test_bind_run_context_replaces_previous_run():
    first = bind_run_context("train")
    second = bind_run_context("locate")
    context = structlog.contextvars.get_contextvars()
    assert first != second
    assert context == {"run_id": second, "command": "locate"}


def test_logger_accepts_key_values():
    """Structured events take arbitrary fields without raising."""
    get_logger(__name__).info("Epoch finished", epoch=1, loss=0.5, train_acc=0.25)
