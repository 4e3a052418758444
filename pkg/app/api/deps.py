from fastapi import HTTPException, Request, status

from ..plantlink.session import PlantSession


def get_plant_session(request: Request) -> PlantSession:
    session = getattr(request.app.state, "plant", None)
    if session is None:
        raise HTTPException(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, detail="No plant is being served")
    return session
