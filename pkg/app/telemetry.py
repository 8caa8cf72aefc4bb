"""
OpenTelemetry configuration and instrumentation.

Provides centralized setup for:
- TracerProvider configuration
- OTLP exporter setup (only when an endpoint is configured)
- Log correlation with trace/span IDs
- A span helper for experiment runs
"""

from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping
from contextlib import contextmanager
from typing import TYPE_CHECKING, Any

from opentelemetry import trace
from opentelemetry.exporter.otlp.proto.grpc.trace_exporter import OTLPSpanExporter
from opentelemetry.sdk.resources import SERVICE_NAME, SERVICE_NAMESPACE, Resource
from opentelemetry.sdk.trace import TracerProvider
from opentelemetry.sdk.trace.export import BatchSpanProcessor
from opentelemetry.trace import Status, StatusCode

if TYPE_CHECKING:
    from app.config import Config

logger = logging.getLogger(__name__)

TRACER_NAME = "fog_slicing"


class TraceIdLogFilter(logging.Filter):
    """Log filter that adds OpenTelemetry trace context to log records.

    Adds `otelTraceID` and `otelSpanID` attributes to each log record,
    enabling correlation between logs and traces.
    """

    def filter(self, record: logging.LogRecord) -> bool:
        span = trace.get_current_span()
        if span.is_recording():
            ctx = span.get_span_context()
            record.otelTraceID = format(ctx.trace_id, "032x")
            record.otelSpanID = format(ctx.span_id, "016x")
        else:
            record.otelTraceID = "0" * 32
            record.otelSpanID = "0" * 16
        return True


def configure_logging(level: str = "INFO") -> None:
    """Configure logging with trace correlation format.

    Sets up the root logger with a format that includes trace and span IDs,
    and adds the TraceIdLogFilter to all handlers.
    """
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=(
            "%(asctime)s - %(name)s - %(levelname)s - "
            "[trace_id=%(otelTraceID)s span_id=%(otelSpanID)s] - %(message)s"
        ),
    )

    log_filter = TraceIdLogFilter()
    for handler in logging.root.handlers:
        if not any(isinstance(f, TraceIdLogFilter) for f in handler.filters):
            handler.addFilter(log_filter)


def configure_opentelemetry(config: Config) -> trace.Tracer:
    """Configure OpenTelemetry, exporting over OTLP when an endpoint is set.

    Args:
        config: Runtime configuration with OTel settings.

    Returns:
        Configured tracer instance for creating spans.
    """
    resource = Resource.create(
        {
            SERVICE_NAME: config.service_name,
            SERVICE_NAMESPACE: config.service_namespace,
            "deployment.environment": config.environment,
            "service.version": config.app_version,
        }
    )

    provider = TracerProvider(resource=resource)

    if config.tracing_enabled:
        logger.info(f"Configuring OTLP exporter to: {config.otel_endpoint}")
        exporter = OTLPSpanExporter(endpoint=config.otel_endpoint, insecure=True)
        provider.add_span_processor(BatchSpanProcessor(exporter))
    else:
        logger.debug("No OTLP endpoint configured; spans are recorded but not exported")

    trace.set_tracer_provider(provider)
    return trace.get_tracer(TRACER_NAME)


def get_tracer() -> trace.Tracer:
    """Get the current tracer instance."""
    return trace.get_tracer(TRACER_NAME)


@contextmanager
def traced(name: str, attributes: Mapping[str, Any] | None = None) -> Iterator[trace.Span]:
    """Run a block inside a span; exceptions are recorded and re-raised.

    Example:
        with traced("experiment.run", {"policy": "dqn", "seed": 7}) as span:
            span.set_attribute("slicing.steps", 1000)
    """
    with get_tracer().start_as_current_span(
        name, record_exception=False, set_status_on_exception=False
    ) as span:
        for key, value in (attributes or {}).items():
            span.set_attribute(f"slicing.{key}", value)
        try:
            yield span
        except Exception as exc:
            span.record_exception(exc)
            span.set_status(Status(StatusCode.ERROR, str(exc)))
            raise
