//! Deterministic backend stand-ins and the reconstruction math they rely on.

mod edt;
mod extrude;
mod image;

pub use self::edt::{edt_2d, squared_edt, BinaryMask};
pub use self::extrude::{
    signed_silhouette_distance, silhouette_extrude, ExtrudeError, DEFAULT_THICKNESS,
};
pub use self::image::{mock_candidates, render_candidate, stable_hash64, MOCK_IMAGE_BACKEND_ID};

pub const MOCK_RECONSTRUCT_BACKEND_ID: &str = "mock-reconstruct";
