"""HTTP API over the engine.

Routes are thin: validation plus error mapping; all dialog logic stays in
the engine. When a static directory is configured (the built web client),
it is mounted at the root after the API routes.
"""
from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .engine import Engine, MessageTooLargeError, UnknownSessionError
from .kg import LookupError_


class MessageIn(BaseModel):
    text: str


def make_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="convrec", docs_url=None, redoc_url=None)

    @app.post("/api/session")
    def create_session() -> dict:
        engine.sweep_idle()
        session = engine.create_session()
        return {"id": session.id, "greeting": engine.config.greeting}

    @app.post("/api/session/{session_id}/message")
    def post_message(session_id: str, message: MessageIn) -> dict:
        engine.sweep_idle()
        try:
            return engine.respond(session_id, message.text)
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session")
        except MessageTooLargeError as exc:
            raise HTTPException(status_code=413, detail=str(exc))

    @app.get("/api/session/{session_id}/log")
    def session_log(session_id: str) -> dict:
        try:
            return {"session": session_id,
                    "turns": engine.session_log(session_id)}
        except UnknownSessionError:
            raise HTTPException(status_code=404, detail="unknown session")

    @app.get("/api/graph/entity/{entity_id}")
    def entity_info(entity_id: int) -> dict:
        try:
            return engine.entity_info(entity_id)
        except LookupError_:
            raise HTTPException(status_code=404, detail="unknown entity")

    if engine.config.static_dir:
        app.mount("/", StaticFiles(directory=engine.config.static_dir,
                                   html=True), name="static")
    return app
