//! Lab toolkit for transcoding steganography (TranSteg) over RTP voice.
//!
//! The crate models the full chain at desk scale: PCM audio and a synthetic
//! speech generator, a menu of narrowband codecs (G.711, G.726, a toy LPC
//! vocoder), RTP packetization, the covert channel itself (transcode the
//! payload to a cheaper codec, keep the declared payload type and size, fill
//! the freed bytes with hidden data), the warden's detection toolbox, and an
//! experiment harness for MFCC+GMM steganalysis of the hard single-warden
//! case where only re-transcoded voice is observable.

pub mod audio;
pub mod codecs;
pub mod dsp;
pub mod experiments;
pub mod gmm;
pub mod mfcc;
pub mod rtp;
pub mod stego;
pub mod warden;
