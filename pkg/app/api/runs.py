from fastapi import APIRouter, Depends, HTTPException, status
from sqlmodel import Session, select

from ..db.session import get_session
from ..models.models import ExperimentRun
from ..schemas.run import RunPublic

router = APIRouter(prefix="/runs", tags=["runs"])


@router.get("/",
            response_model=list[RunPublic],
            status_code=status.HTTP_200_OK)
def get_runs(
    controller: str | None = None,
    case: int | None = None,
    config_hash: str | None = None,
    session: Session = Depends(get_session)
):
    query = select(ExperimentRun)

    if controller is not None:
        query = query.where(ExperimentRun.controller == controller)

    if case is not None:
        query = query.where(ExperimentRun.case == case)

    if config_hash is not None:
        query = query.where(ExperimentRun.config_hash == config_hash)

    return session.exec(query.order_by(ExperimentRun.id)).all()


@router.get("/{run_id}",
            response_model=RunPublic,
            status_code=status.HTTP_200_OK)
def get_run(run_id: int, session: Session = Depends(get_session)):
    run = session.get(ExperimentRun, run_id)
    if run is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="Run not found")
    return run
