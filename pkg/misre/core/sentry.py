"""Lightweight Sentry initializer used by the CLI commands.

Reads MISRE_SENTRY_DSN (and friends) from settings. If the DSN is unset, this
is a no-op so local runs and CI keep working without any extra configuration.
"""

from __future__ import annotations

import logging

from misre.core.config import settings

logger = logging.getLogger(__name__)


def init_sentry(component: str) -> bool:
    """Initialize Sentry for a given component (e.g. "fit", "bench").

    Returns True when the SDK was initialized.
    """
    dsn = settings.sentry_dsn
    if not dsn:
        logger.debug("[SENTRY] MISRE_SENTRY_DSN not set; Sentry disabled for component=%s", component)
        return False

    try:
        import sentry_sdk
    except ImportError:
        logger.warning("[SENTRY] sentry-sdk not installed; skipping init for component=%s", component)
        return False

    try:
        sentry_sdk.init(
            dsn=dsn,
            environment=settings.sentry_environment or "local",
            traces_sample_rate=0.0,
        )
        sentry_sdk.set_tag("component", component)
        logger.info("[SENTRY] Initialized component=%s", component)
        return True
    except Exception as exc:  # pragma: no cover - never let Sentry init crash a run
        logger.exception("[SENTRY] Failed to initialize for component=%s: %s", component, exc)
        return False
