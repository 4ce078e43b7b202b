pub mod bench;
pub mod datagen;
pub mod model;
pub mod net;
pub mod solver;
pub mod sparse;
