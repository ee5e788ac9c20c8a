"""Number formatting filters for the markdown report templates."""
from django import template

register = template.Library()


@register.filter
def thousands(value):
    """38698 -> "38,698"."""
    try:
        return f"{int(value):,}"
    except (TypeError, ValueError):
        return value


@register.filter
def percent(value, digits=2):
    """0.8392 -> "83.92%"."""
    try:
        return f"{float(value) * 100:.{int(digits)}f}%"
    except (TypeError, ValueError):
        return value


@register.filter
def join_or_dash(values, separator=", "):
    return separator.join(str(v) for v in values) if values else "-"
