/* stand-in for https://wallet.nimiq.com/js/network.js */
(function () { self.loaded = (self.loaded || []).concat("https://wallet.nimiq.com/js/network.js"); })();
