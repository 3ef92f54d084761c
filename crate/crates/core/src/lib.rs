pub mod body;
pub mod geom;
pub mod harness;
pub mod loss;
pub mod model;
pub mod net;
pub mod synthdata;
