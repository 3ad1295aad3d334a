pub mod distance_control;
pub mod dynamics;
pub mod geometry;
pub mod linalg;
pub mod perception;
pub mod planning;
pub mod sim;
pub mod supervision;
pub mod synthesis;
