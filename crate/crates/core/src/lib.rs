pub mod fuzzy;
pub mod kinematics;
pub mod packet;
pub mod sim;
pub mod topology;
pub mod world;
