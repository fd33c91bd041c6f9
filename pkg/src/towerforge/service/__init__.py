"""Session service: HTTP + WebSocket surface over the episode engine."""

from towerforge.service.app import create_app
from towerforge.service.client import ServiceClient
from towerforge.service.sessions import Session, SessionManager

__all__ = ["create_app", "ServiceClient", "Session", "SessionManager"]
