from fastapi import APIRouter, Depends, HTTPException, status

from ..plantlink.session import PlantSession
from ..schemas.run import DeviceStatus, PlantStatus
from ..sim.fleet import is_remote_id
from ..sim.house import STATE_BY_CODE
from .deps import get_plant_session

router = APIRouter(prefix="/plant", tags=["plant"])


@router.get("/status",
            response_model=PlantStatus,
            status_code=status.HTTP_200_OK)
def get_status(plant: PlantSession = Depends(get_plant_session)):
    return plant.status()


@router.get("/devices/{house_id}",
            response_model=DeviceStatus,
            status_code=status.HTTP_200_OK)
def get_device(house_id: str, plant: PlantSession = Depends(get_plant_session)):
    index = plant.fleet.index.get(house_id)
    if index is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail="House not found")

    frame = plant.latest
    return DeviceStatus(
        house_id=house_id,
        remote=is_remote_id(house_id),
        state=STATE_BY_CODE[int(frame.state[index])].value,
        temperature_c=float(frame.temperature[index]),
        power_w=float(frame.power[index]),
        position=float(frame.position[index]),
        lock_remaining_s=float(frame.lock_remaining[index]),
    )
